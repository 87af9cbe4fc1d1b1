"""parkvision: classical plate recognition plus a parking service back end."""

__version__ = "0.1.0"
