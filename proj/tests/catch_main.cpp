#include <catch2/catch_amalgamated.cpp>
