"""Streaming seizure detection on multichannel scalp EEG."""

__version__ = "0.1.0"
