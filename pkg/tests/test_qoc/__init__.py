"""Tests for the photonic_qoc package."""
