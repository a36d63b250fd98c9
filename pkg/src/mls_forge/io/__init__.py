"""Scenario files, run outputs and the command line."""
