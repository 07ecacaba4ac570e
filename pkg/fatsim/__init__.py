"""Desk-scale simulator of federated alternate training for semi-supervised segmentation."""

__version__ = "0.1.0"
