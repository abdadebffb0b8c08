#pragma once

#include <stdexcept>
#include <string>

namespace canon {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error { using Error::Error; };
struct IndexError : Error { using Error::Error; };
struct LengthError : Error { using Error::Error; };
struct VocabError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };
struct CorruptionError : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct CorpusError : Error { using Error::Error; };
struct EvalError : Error { using Error::Error; };
struct CacheError : Error { using Error::Error; };
struct ReportError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace canon
