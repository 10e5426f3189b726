"""Desk-scale TTS front-end: g2p tagging, RAPT pitch, prosody network, conditioning export."""

__version__ = "0.1.0"
