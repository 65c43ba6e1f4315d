"""Short-interaction-time readout of a qubit through an oscillator mediator."""

__version__ = "0.1.0"
