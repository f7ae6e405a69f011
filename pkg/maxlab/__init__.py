"""
Maximal Operator Laboratory

Exact computation and certification of Hardy-Littlewood maximal operators
on finite metric measure spaces: constructions with prescribed ball
structure, weak-type witnesses, random partition trees, Poisson covering
and k-ary tree estimates.
"""

__version__ = "1.0.0"
__author__ = "Maximal Operator Lab Team"
