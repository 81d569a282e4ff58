"""Allow ``python -m phraselab`` as an alias for the console script."""

from .cli import entrypoint

entrypoint()
