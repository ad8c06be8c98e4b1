"""Backpropagation-free Q-learning with OS-ELM, plus ELM/DQN baselines and a Q20 datapath emulation."""

__version__ = "0.1.0"
