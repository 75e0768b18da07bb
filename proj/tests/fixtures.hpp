#pragma once

#include <subj/common.hpp>
#include <subj/corpus.hpp>

#include <unistd.h>

#include <atomic>
#include <string>

namespace subj::testing {

/// A scratch directory removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag = "t")
    {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path()
                / ("subj-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

  private:
    fs::path path_;
};

// Kanto > Tokyo > Ueno; Kansai > Osaka.
inline AreaForest small_forest()
{
    return AreaForest({{"kanto", "Kanto", std::nullopt},
                       {"tokyo", "Tokyo", "kanto"},
                       {"ueno", "Ueno", "tokyo"},
                       {"kansai", "Kansai", std::nullopt},
                       {"osaka", "Osaka", "kansai"}});
}

/// Three hotels with hand-written reviews.
inline Corpus small_corpus()
{
    std::vector<Entity> es{
        {"h1", "Ueno Inn", "ueno", "Near the park.", 4.2, {{"cleanliness", 4.5}, {"location", 4.0}}, {}},
        {"h2", "Tokyo Stay", "tokyo", "Business hotel.", 3.1, {{"cleanliness", 2.0}, {"location", 4.8}}, {}},
        {"h3", "Osaka House", "osaka", "Quiet street.", 3.9, {{"cleanliness", 3.5}, {"location", 2.5}}, {}},
    };
    std::vector<Review> rs{
        {"r1", "h1", "The room was very clean. Staff were friendly!", {}},
        {"r2", "h1", "Clean room and a quiet street.", {}},
        {"r3", "h2", "The room was dirty. Great location near the station.", {}},
        {"r4", "h3", "The breakfast was delicious? The room was clean.", {}},
    };
    return Corpus(small_forest(), es, rs);
}

}  // namespace subj::testing
