"""Offline feature export: pretrained transformer encodings of marked entity pairs."""
