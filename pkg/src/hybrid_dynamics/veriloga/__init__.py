"""Verilog-A export of hybrid models and a reference interpreter for it."""

from .ast import VaModule, print_module
from .emit import build_module, export_veriloga
from .interp import CompiledModule, simulate_subset
from .parser import parse_subset, validate
from .verify import native_dense, roundtrip_verify

__all__ = [
    "VaModule", "print_module", "build_module", "export_veriloga", "CompiledModule",
    "simulate_subset", "parse_subset", "validate", "native_dense", "roundtrip_verify",
]
