"""Main entry point for the glelab CLI."""

from .cli import app

if __name__ == "__main__":
    app()
