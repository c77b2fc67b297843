"""membank: text-conditioned retrieval over a bank of image feature maps,
plus desk-scale GAN building blocks with hand-verified gradients."""

from membank.bank import MemoryBank, bank_stats, build_bank, load_bank, read_manifest, save_bank
from membank.features import toy_image_encoder, toy_text_encoder
from membank.retrieval import ALGORITHMS, DEFAULT_ALGORITHM, RetrievalResult, retrieve

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "DEFAULT_ALGORITHM",
    "MemoryBank",
    "RetrievalResult",
    "bank_stats",
    "build_bank",
    "load_bank",
    "read_manifest",
    "retrieve",
    "save_bank",
    "toy_image_encoder",
    "toy_text_encoder",
    "__version__",
]
