"""Edge-detection toolkit: classical gradient baselines, a from-scratch
CNN encoder-decoder, a linear SVM pixel classifier, the hybrid pipeline
combining them, and an ODS/OIS/AP boundary benchmark."""

__version__ = "0.1.0"
