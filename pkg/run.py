"""
Lets `python run.py <subcommand> ...` behave like `python -m tcpgen_biasing <subcommand> ...` from a source checkout.
"""

from tcpgen_biasing import __main__ as tcpgen

tcpgen.__name__ = "__main__"
tcpgen.run()
