"""Desk-scale intelligent-decision-tool workbench.

A world-model RL agent with distributional value heads, adversarial
explanations, strategically similar autoencoders, and criticality /
safety-margin analysis, exposed through a session service and CLI.
"""

__version__ = "0.1.0"
