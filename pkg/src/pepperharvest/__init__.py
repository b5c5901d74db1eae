"""Sweet-pepper harvesting perception pipeline with a synthetic RGB-D greenhouse."""

__version__ = "0.1.0"
