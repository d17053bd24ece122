"""Tests for JOURNEL."""
