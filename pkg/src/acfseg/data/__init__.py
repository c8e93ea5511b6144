from .dataset import DatasetManifest, ManifestError, SegDataset, load_split
from .netpbm import NetpbmError, read_pgm, read_ppm, write_pgm, write_ppm
from .synthetic import SyntheticSpec, generate

__all__ = [
    "DatasetManifest",
    "ManifestError",
    "NetpbmError",
    "SegDataset",
    "SyntheticSpec",
    "generate",
    "load_split",
    "read_pgm",
    "read_ppm",
    "write_pgm",
    "write_ppm",
]
