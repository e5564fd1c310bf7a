"""Personal sound zones with a cumulative physical-model ablation.

Simulates acoustic transfer functions for a loudspeaker array in a shoebox
room at four model fidelities (C0 to C3), designs pressure-matching filters
on each, and scores them with inter-zone isolation, inter-program
interference and crosstalk cancellation.
"""
__version__ = "0.1.0"
