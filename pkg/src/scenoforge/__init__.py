"""Driving-scenario generation from natural-language test requests.

An LLM agent chain (interpreter, network generator, vehicle generator,
evaluator) produces SUMO-compatible road networks and trips, checked and
repaired against a built-in network compiler and router, and scored in a
small microscopic simulator.
"""

__version__ = "0.1.0"
