"""Entry point for running the scenario runner as a module."""

from qproof_sim import main

main()
