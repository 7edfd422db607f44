"""Wireless-powered MEC with multi-user collaboration: WSCR maximization."""
__version__ = "0.1.0"
