"""File output helpers"""
