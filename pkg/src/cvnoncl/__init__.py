"""Continuous-variable nonclassicality toolkit."""
