"""Offline-finding key chains, ECIES reports, CF authentication and a rendezvous simulator."""

__version__ = "0.1.0"
