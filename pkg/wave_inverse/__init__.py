"""Convexification inversion of the 1D wave equation c(y) u_tt = u_yy from boundary traces."""
