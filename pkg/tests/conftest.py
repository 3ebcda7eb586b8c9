import os
import sys

# make the oracle helpers importable from any test module
sys.path.insert(0, os.path.dirname(__file__))
