# Tests for the stability laboratory
