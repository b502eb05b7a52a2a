"""Two-stage prompt conditioning for generative semantic bokeh, at desk scale."""

__version__ = "0.1.0"
