"""cigrate: migrate CI configurations between Travis CI and GitHub Actions."""

__version__ = "0.1.0"
