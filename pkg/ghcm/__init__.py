"""Simulation, thresholds and two-phase exact recovery for the two-community
Geometric Hidden Community Model."""
