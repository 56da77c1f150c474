# multidetect
