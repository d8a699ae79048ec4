"""Mild solutions and variation-of-constants formulas for linear delay equations."""
