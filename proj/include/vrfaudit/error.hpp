#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vrfaudit {

enum class ErrorCode {
    IoError,
    NoPartitions,
    UnreadableRoot,
    VersionUnresolved,
    BadMagic,
    TruncatedImage,
    NoEmbeddedConfig,
    CorruptConfigStream,
    BannerNotFound,
    UnknownDate,
    MalformedElf,
    NotAZip,
    NoManifest,
    MalformedAxml,
    EmptyAppSet,
    UnbalancedParens,
    VersionCollision,
    BadCatalog,
    BadReport,
    InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::NoPartitions: return "NoPartitions";
        case ErrorCode::UnreadableRoot: return "UnreadableRoot";
        case ErrorCode::VersionUnresolved: return "VersionUnresolved";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::TruncatedImage: return "TruncatedImage";
        case ErrorCode::NoEmbeddedConfig: return "NoEmbeddedConfig";
        case ErrorCode::CorruptConfigStream: return "CorruptConfigStream";
        case ErrorCode::BannerNotFound: return "BannerNotFound";
        case ErrorCode::UnknownDate: return "UnknownDate";
        case ErrorCode::MalformedElf: return "MalformedElf";
        case ErrorCode::NotAZip: return "NotAZip";
        case ErrorCode::NoManifest: return "NoManifest";
        case ErrorCode::MalformedAxml: return "MalformedAxml";
        case ErrorCode::EmptyAppSet: return "EmptyAppSet";
        case ErrorCode::UnbalancedParens: return "UnbalancedParens";
        case ErrorCode::VersionCollision: return "VersionCollision";
        case ErrorCode::BadCatalog: return "BadCatalog";
        case ErrorCode::BadReport: return "BadReport";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

// All toolkit failures surface as this type; code() is the stable,
// machine-readable part, what() carries location detail.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& message() const noexcept { return message_; }

private:
    ErrorCode code_;
    std::string message_;
};

}  // namespace vrfaudit
