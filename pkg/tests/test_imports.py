def test_importing_package_main():
    """Test that simply importing the application works. This checks for any dependency issues."""
    from tcpgen_biasing import __main__ as tcpgen_main  # noqa: F401


def test_version_is_a_string():
    """Test that the package exposes its version for --version and setup.py."""
    from tcpgen_biasing import __version__

    assert isinstance(__version__, str)
    assert __version__.count(".") == 2
