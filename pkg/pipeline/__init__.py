"""Evaluation pipeline for cell shapes."""
