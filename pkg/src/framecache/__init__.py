"""Inter-frame layer caching for small encoder-decoder CNN inference.

Subpackages are imported explicitly, e.g. ``from framecache import ops`` or
``from framecache.builders import build_unet``. The top-level module stays
light so the CLI can configure threading before numpy loads.
"""

__version__ = "0.1.0"
