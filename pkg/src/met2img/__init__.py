"""Metagenomic abundance tables to synthetic images and small CNNs."""
