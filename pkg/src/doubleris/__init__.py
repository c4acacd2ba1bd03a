"""Simulation and optimization of MIMO links assisted by two reconfigurable surfaces."""
