"""Nepali video captioning toolkit."""
