"""Spectral mesh learning: cotangent Laplacian eigenbases, spectral
descriptors and a multi-resolution SE-ResNet for mesh classification and
segmentation."""

__version__ = "0.1.0"
