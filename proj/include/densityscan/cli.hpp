#pragma once

/// Entry point of the densityscan tool. Exit codes: 0 success, 2 usage or input error,
/// 3 runtime failure.
int run_cli(int argc, char** argv);
