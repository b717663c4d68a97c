"""Minimizing-movement solver and estimate certification for
``|u_t|^{p(x)-2} u_t - div(|grad u|^{m(x)-2} grad u) = f`` with zero boundary values."""

__version__ = "0.1.0"
