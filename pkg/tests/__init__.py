# Tests for frontier-pm
