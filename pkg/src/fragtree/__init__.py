"""Self-similar fragmentation processes, their genealogy trees and leaf dimensions."""

__version__ = "0.1.0"
