"""sweepplots: figure rendering for spreadchan sweep CSV output."""

from .render import CSV_COLUMNS, FigureSpec, SchemaError, read_sweep_csv, render

__version__ = "0.1.0"
