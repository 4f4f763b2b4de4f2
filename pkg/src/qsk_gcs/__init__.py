"""Variational ground states of the quantum Sherrington-Kirkpatrick model."""
