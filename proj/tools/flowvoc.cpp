#include <exception>
#include <iostream>

#include "flowvoc/error.hpp"
#include "flowvoc/pipeline.hpp"

namespace {

int exit_code_for(flowvoc::ErrorKind kind) {
    using flowvoc::ErrorKind;
    switch (kind) {
        case ErrorKind::Usage: return 2;
        case ErrorKind::Config: return 3;
        case ErrorKind::Contract: return 4;
        case ErrorKind::Io: return 5;
        case ErrorKind::Format: return 6;
        case ErrorKind::Numeric: return 7;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return flowvoc::run_cli(argc, argv);
    } catch (const flowvoc::Error& e) {
        std::cerr << "error: " << flowvoc::error_kind_name(e.kind()) << ": " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
}
