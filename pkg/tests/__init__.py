"""Test suite for photonic-qoc."""
