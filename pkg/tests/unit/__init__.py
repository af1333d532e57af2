"""Unit tests for DMHA"""
