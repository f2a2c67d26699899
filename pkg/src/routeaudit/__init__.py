"""Generate delivery routes over map data and audit how well vision models read them."""

__version__ = "0.1.0"
