# Test package for the MHD Rayleigh-Taylor stability solver
