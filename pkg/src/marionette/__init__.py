"""Directive-steered whole-body humanoid control stack."""

__version__ = "0.1.0"
