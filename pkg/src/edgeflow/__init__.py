"""Knowledge-grounded dialogue generation over an enhanced concept graph."""

__version__ = "0.1.0"
