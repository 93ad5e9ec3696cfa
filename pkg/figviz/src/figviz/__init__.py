"""Batch renderer turning simulator CSV tables into figure images."""

from figviz.render import KINDS, Style, render
from figviz.schemas import SchemaError, Table, load_inputs, read_table

__all__ = [
    "KINDS",
    "SchemaError",
    "Style",
    "Table",
    "load_inputs",
    "read_table",
    "render",
]
