"""Large-deviation laboratory for Birkhoff sums of unbounded observables on interval maps."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:
    __version__ = "0.1.0"
