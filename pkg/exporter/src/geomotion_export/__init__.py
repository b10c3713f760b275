"""Bridge from pretrained geometry and flow models to the geomotion
file-provider layout (.flo flow files and GMT1 feature tensors)."""

__version__ = "0.1.0"
