"""bondsat: equality saturation with bond nodes for combinational circuits."""

__version__ = "0.1.0"
