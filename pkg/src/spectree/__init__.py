"""Random walks on generic random trees: ensembles, samplers and estimators."""
__version__ = "0.1.0"
