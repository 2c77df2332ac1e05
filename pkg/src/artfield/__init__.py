"""Articulated tri-plane radiance fields."""
