"""Tests for photonseq."""
