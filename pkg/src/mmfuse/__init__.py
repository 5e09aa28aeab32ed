"""mmfuse: frame-aligned early fusion of acoustic and linguistic embeddings
for 3-class cognitive-status classification (CN / MCI / ADRD).

Submodules
----------
tensorio    binary embedding containers and the corpus manifest
alignment   word timestamps -> frame spans, subword allocation, TA/TA-PAD plans
fusion      early-fusion tensor construction and late-fusion averaging
classifier  transformer sequence classifier with deterministic training
hypersearch adaptive (TPE) hyperparameter search
evaluation  metrics, stratified splits, multi-seed protocol, layer sweeps
synthgen    synthetic multimodal corpus generator
cli         command-line pipeline driver
"""

__version__ = "0.1.0"

LABELS = ("CN", "MCI", "ADRD")
LABEL_TO_INDEX = {name: i for i, name in enumerate(LABELS)}
NUM_CLASSES = len(LABELS)
