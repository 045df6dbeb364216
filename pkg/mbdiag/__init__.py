"""Goldstone diagram engine for effective Hamiltonians and transition operators."""
