"""Desk-scale tunneling-spectroscopy laboratory for probe-qubit experiments.

The package simulates the five-step probe-qubit protocol (system anneal,
probe anneal, hold, and the two reversed legs) under four dynamical models:
an adiabatic Lindblad master equation, simulated quantum annealing
(path-integral Monte Carlo), the SSSV classical-rotor model, and a
spin-vector Langevin equation.  From the simulated tunneling-rate peaks it
reconstructs energy gaps and Gibbs populations, and it provides negativity
and entanglement-witness diagnostics for the reconstructed states.
"""

__version__ = "0.1.0"
