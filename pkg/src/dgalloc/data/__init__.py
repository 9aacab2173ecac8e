"""Bundled datasets: the standard 33-bus feeder, one day of wind/solar
profiles, and a reference allocation for re-scoring runs."""

from importlib import resources


def data_path(name: str) -> str:
    """Filesystem path of a bundled data file."""
    return str(resources.files(__package__) / name)
