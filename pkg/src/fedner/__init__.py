"""Federated training of a BiLSTM-CRF named-entity tagger, simulated in one process."""

__version__ = "0.1.0"
