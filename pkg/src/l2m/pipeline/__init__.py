"""Datasets, preprocessing cache, training, evaluation and export."""
