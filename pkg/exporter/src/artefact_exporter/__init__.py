"""Export masked-LM encoder representations into ARTF artefact stores."""

__version__ = "0.1.0"

from .artf import read_artf, write_artf
from .encoders import HashEncoder, TransformersEncoder, build_encoder
from .export import ExportSpec, expected_record_count, export, load_sentences
