"""Export multi-scale backbone activations to FMAP containers."""

from fgat_exporter.backbone import FeatureBackbone
from fgat_exporter.export import ExportJob, export

__version__ = "0.1.0"

__all__ = ["ExportJob", "FeatureBackbone", "export", "__version__"]
