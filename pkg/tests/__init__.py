"""Tests for latticeinv."""
