"""Test suite for DMHA"""
