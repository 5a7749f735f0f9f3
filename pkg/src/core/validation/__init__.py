"""Validation modules."""

from .helpers import *
from .validators import *
